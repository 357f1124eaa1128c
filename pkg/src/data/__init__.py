"""
Data pools, batch samplers and the synthetic corpus
"""
