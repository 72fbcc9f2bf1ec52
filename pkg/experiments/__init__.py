"""
Validation suites, ablations and the synthetic problems they run on.
"""
