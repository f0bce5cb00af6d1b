"""Orthogonality sampling for locating small permeable objects from 2D TE scattered fields."""

__version__ = "0.1.0"

from .forward import (ScatterDataset, SingularInteractionError, SmallObject, add_awgn,
                      born_scattered, foldy_lax_scattered)
from .geometry import ArrayGeometry, ImagingGrid, MediumParams, fresnel_geometry, make_grid
from .indicators import (IndicatorMap, find_peaks, osm_multi, osm_multifreq, osm_single,
                         osm_single_variant)
from .theory import (ConvergenceError, SeriesConfig, d_profile, e_msm, e_osm,
                     lemma_integral_closed, lemma_integral_quadrature, series_s1_s2,
                     structure_multi, structure_single)

__all__ = [
    "ArrayGeometry", "ConvergenceError", "ImagingGrid", "IndicatorMap", "MediumParams",
    "ScatterDataset", "SeriesConfig", "SingularInteractionError", "SmallObject", "add_awgn",
    "born_scattered", "d_profile", "e_msm", "e_osm", "find_peaks", "foldy_lax_scattered",
    "fresnel_geometry", "lemma_integral_closed", "lemma_integral_quadrature", "make_grid",
    "osm_multi", "osm_multifreq", "osm_single", "osm_single_variant", "series_s1_s2",
    "structure_multi", "structure_single",
]
