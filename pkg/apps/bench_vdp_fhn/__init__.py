"""
Mini app: benchmarks Van der Pol / FitzHugh-Nagumo.
"""
