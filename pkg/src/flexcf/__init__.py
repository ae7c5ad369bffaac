"""Counterfactual explanations for tabular classifiers with inference-time
mutability templates: adversarially trained generators, a gradient-descent
baseline, quality metrics, a benchmark harness and an HTTP serving layer."""

__version__ = "0.1.0"
