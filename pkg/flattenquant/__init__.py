"""
FlattenQuant: post-training quantization with channel flattening
"""

__version__ = "1.0.0"
