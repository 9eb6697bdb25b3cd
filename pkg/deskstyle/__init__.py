from importlib.metadata import version

__version__ = version("deskstyle")

from deskstyle.core.pipeline import ablation_suite, transfer  # noqa:F401
