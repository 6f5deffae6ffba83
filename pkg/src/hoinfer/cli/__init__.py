"""Command-line front end."""

from .config import AnalysisConfig, load_config, parse_config
from .ingest import Table, ingest
from .main import main

__all__ = ["AnalysisConfig", "Table", "ingest", "load_config", "main", "parse_config"]
