"""Image analysis of nonwoven fabrics.

Submodules
----------
imgcore      image types, PGM I/O, filters, thresholds, skeletons
synthgen     seeded synthetic images with exact ground truth
roughness    surface-profile criteria, roughness factor, friction regression
orientation  fiber orientation by 2D DFT and Hough transform
pilling      Haar wavelet pilling statistic and grading
defectnet    patch features, box-counting dimension, MLP classifier
porepsd      morphology, cross-section slicing, pore-size distribution
cli          command-line front end
"""

from .errors import NonwovenError

__version__ = "0.1.0"
__all__ = ["NonwovenError", "__version__"]
