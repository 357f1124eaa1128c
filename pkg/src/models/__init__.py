"""
Separator, critics and their checkpoints
"""
