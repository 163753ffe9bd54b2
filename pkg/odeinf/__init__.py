"""
ODEInf: inferência amortizada de campos vetoriais de EDOs.

Prior de campos polinomiais, simulação e corrupção de trajetórias, dataset
em shards, estimador neuronal condicionado em contexto, treino, finetune e
avaliação por reconstrução de trajetórias.
"""

__version__ = "1.0.0"
