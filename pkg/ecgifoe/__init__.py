__version__ = "0.1"
__author__ = "ecgifoe developers"
__status__ = "Development"
__license__ = "MIT"
__description__ = "ecgifoe: Finite element ECG imaging with learned spatiotemporal Fields-of-Experts priors"
__long_description__ = "Reconstruction of epicardial potentials from body-surface electrodes with Tikhonov, total variation and Fields-of-Experts regularizers"
__long_description_content_type__ = "text/markdown"
__keywords__ = "electrocardiographic imaging, inverse problems, finite elements, fields of experts, regularization"
