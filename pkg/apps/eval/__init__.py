"""
Mini app: avaliação de reconstrução e generalização.
"""
