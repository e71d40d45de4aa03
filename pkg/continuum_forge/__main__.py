"""
CONTINUUM-FORGE — Entry Point
Run: python -m continuum_forge  OR  continuum-forge / cforge
"""

from .cli import main

if __name__ == "__main__":
    main()
