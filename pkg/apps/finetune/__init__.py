"""
Mini app: finetune por trajetórias.
"""
