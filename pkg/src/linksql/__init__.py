"""Two-stage text-to-SQL harness: dataset preparation, inference
orchestration against chat endpoints, and evaluation.
"""

__version__ = "0.1.0"
