# PhysE-Inv package
from .config_handler import ConfigHandler, RunConfig
from .logger import setup_logging

__version__ = '0.1.0'

__all__ = ['ConfigHandler', 'RunConfig', 'setup_logging', '__version__']
