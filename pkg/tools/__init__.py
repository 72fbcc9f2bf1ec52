"""
Optimizer building blocks: seeding, influence weights, mixture sampling,
acquisition, evaluators and the inner estimator.
"""
