"""
Experiment configuration and command handlers
"""
