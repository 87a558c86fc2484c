"""Sub-sampling duelling bandit algorithms, baselines and regret benchmarks."""
__version__ = "0.1.0"
