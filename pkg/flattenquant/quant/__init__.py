"""
Numerical modules
"""
