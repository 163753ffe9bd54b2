"""
Mini apps ODEInf (uma por subcomando da CLI).
"""
