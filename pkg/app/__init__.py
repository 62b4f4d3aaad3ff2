"""
Command-line application and settings
"""
