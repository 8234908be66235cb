"""Behavioral simulator of an all-digital SerDes link."""

from .core import (CdrConfig, ConfigError, LinkConfig, ParallelFrame, Waveform, load_config,
                   validate_config)
from .link import Impairments, RunReport, run_link

__all__ = ["CdrConfig", "ConfigError", "Impairments", "LinkConfig", "ParallelFrame",
           "RunReport", "Waveform", "load_config", "run_link", "validate_config"]
