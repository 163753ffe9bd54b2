"""
Mini app: estatísticas de rejeição e de fronteira do dataset.
"""
