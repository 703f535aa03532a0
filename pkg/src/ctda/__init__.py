"""
Contrastive learning and domain adaptation lab: synthetic mammography-like patches,
kernel discrepancy estimators and the loss decomposition that ties them together.
"""
__version__ = "0.1.0"
