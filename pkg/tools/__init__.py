"""Initialize the tools package."""
from .estimation_tools import SteinEstimationTool
from .reference_tools import CovarianceTool, ReferenceComparisonTool

__all__ = ["SteinEstimationTool", "ReferenceComparisonTool", "CovarianceTool"]
