"""
Losses, training, evaluation, reporting and figures
"""
