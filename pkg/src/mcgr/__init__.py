"""MCGR: cyclic super-resolution GANs with an auxiliary detector for small objects.

Subpackages cover dataset construction (tiling, degradation, annotation
formats), the RFA generator/critic/detector networks, the adversarial and
detection losses, anchor-based box decoding, IQA/mAP metrics, and the
training loop that ties them together.
"""

__version__ = "0.1.0"
