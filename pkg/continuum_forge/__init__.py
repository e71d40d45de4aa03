"""CONTINUUM-FORGE — Microservice Rescheduling Workbench"""

__version__ = "1.0.0"
__author__ = "continuum-forge"
