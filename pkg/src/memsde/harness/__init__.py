"""Configuration, persistence, experiment runs and the command line."""
from .config import ExperimentConfig, dump_config, expand_sweep, load_config, parse_config
from .experiments import RunManifest, TaskStatus, build_drift, build_model, build_past, run_experiment
from .io import emit_csv, file_digest, load_trajectory, read_csv, read_trajectory, save_path, write_trajectory
