"""Vector indexes over unit-norm embedding tables."""

from spr.index.base import Hit, SearchParams, VectorIndex, top_hits
from spr.index.flat import FlatIndex, build_flat
from spr.index.io import load_index, save_index
from spr.index.ivf import IVFIndex, build_ivf, default_nlist
from spr.index.ivfpq import IVFPQIndex, build_ivfpq, pq_adc_table
from spr.index.kmeans import Codebook, KMeansConfig, kmeans

__all__ = [
    "Hit",
    "SearchParams",
    "VectorIndex",
    "top_hits",
    "FlatIndex",
    "build_flat",
    "IVFIndex",
    "build_ivf",
    "default_nlist",
    "IVFPQIndex",
    "build_ivfpq",
    "pq_adc_table",
    "Codebook",
    "KMeansConfig",
    "kmeans",
    "load_index",
    "save_index",
]
