"""
Checks sheaves of smooth functions, Poisson bivectors and fibre products on
manifolds with corners from JSON manifests.
"""

from __future__ import annotations

from poissonsheaf import main


if __name__ == "__main__":
    main()
