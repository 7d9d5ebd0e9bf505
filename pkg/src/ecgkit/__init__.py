"""ECG arrhythmia toolkit.

Parsers for PhysioNet/MIT-BIH formats, Symlet-4 wavelet DSP with QRS
detection, spectral features, dataset preparation with stratified
cross-validation, a from-scratch neural-network engine for the two beat
classifiers, per-class evaluation, a CLI and a JSON inference service.
"""

__version__ = "0.1.0"
