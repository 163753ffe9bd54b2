"""
Orquestrador de mini apps ODEInf.
"""

__version__ = "1.0.0"
