"""
Homogenization toolkit for locally periodic linear elastic media with residual stress.
"""

__version__ = "1.0.0"
