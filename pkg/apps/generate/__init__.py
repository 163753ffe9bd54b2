"""
Mini app: gera o dataset sintético de sistemas.
"""
