"""
Semi-supervised adversarial source separation package
"""
