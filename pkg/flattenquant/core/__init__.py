"""
Core package: configuration, logging and errors
"""
