"""
Mini app: inferência do campo num contexto.
"""
