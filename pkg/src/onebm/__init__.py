"""Automated feature engineering over multi-table relational data."""
from onebm.collector import CollectedType, SamplingPolicy, dfs_collect, group_by
from onebm.ingest import load_database
from onebm.path_enum import TraversalMode, enumerate_paths
from onebm.pipeline import PipelineConfig, run_pipeline
from onebm.transforms import TransformConfig, register_plugin

__all__ = [
    "CollectedType",
    "PipelineConfig",
    "SamplingPolicy",
    "TransformConfig",
    "TraversalMode",
    "dfs_collect",
    "enumerate_paths",
    "group_by",
    "load_database",
    "register_plugin",
    "run_pipeline",
]
