"""
Numerical kernels, LMI assembly, solver plumbing and logging
"""
