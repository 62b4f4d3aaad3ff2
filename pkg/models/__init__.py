"""
Grid, field, parameter and report models
"""
