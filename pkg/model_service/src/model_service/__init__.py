"""Reference HTTP classification service for code snippets.

Implements the black-box adapter wire protocol (POST /classify, GET
/health) around either a rule-based toy classifier or a user-supplied
sequence-classification checkpoint.
"""

from .app import create_app
from .config import ConfigError, ServiceConfig, load_config

__all__ = ["ConfigError", "ServiceConfig", "create_app", "load_config"]
