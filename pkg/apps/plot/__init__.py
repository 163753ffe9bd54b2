"""
Mini app: gráficos SVG.
"""
