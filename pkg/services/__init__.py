"""Data preparation, experiments, explanations and result bundles."""
