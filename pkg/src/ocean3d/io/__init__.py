"""Binary grid files, manifests, normalisation statistics and reports."""
from .manifest import DatasetManifest, ManifestEntry, read_manifest, split_dataset, write_manifest
from .ogf import read_header, read_ogf, write_ogf
from .stats import NormStats, compute_norm_stats, read_norm_stats, write_norm_stats
