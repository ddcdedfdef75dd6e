__all__ = ["grid", "perception", "toolbox", "injection", "curation", "dataset", "evaluation",
	"master", "config", "stages", "cli"]

__version__ = "0.1.0"

from .master import PyArti_Master
from .interfaces import *
