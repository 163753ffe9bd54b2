"""
Mini app: pré-treino do modelo.
"""
