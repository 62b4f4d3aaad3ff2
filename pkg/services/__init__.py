"""
Service layer: certification, simulation, inequality checks and reproduction
"""
