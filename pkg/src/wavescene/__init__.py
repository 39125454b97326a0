"""Scene classification from partially decoded wavelet codestreams.

The package bundles a lossless resolution-progressive wavelet codec, a
small numpy neural-network stack with exact transposed-convolution
adjoints, a sub-band approximation + classification model, and the
training/evaluation pipeline that ties them together.
"""

__version__ = "0.1.0"

__all__ = ["__version__"]
