"""Device-independent randomness amplification toolkit.

Simulated Bell devices and weak (Santha-Vazirani) sources, the MDL
inequality estimator, the output-length security calculus, a quasi-linear
two-source extractor, and locality timing-budget arithmetic.
"""

from randamp.bitstore import BitString, CountTable16, TrialRecordSet

__version__ = "0.1.0"

__all__ = ["BitString", "CountTable16", "TrialRecordSet", "__version__"]
