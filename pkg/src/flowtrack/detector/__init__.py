from .base import (Detector, DetectorClosed, DetectorError, DetectorUnavailable, FailingDetector,
                   FixedCostDetector, NullDetector, ProtocolError)
from .external import DetectorConnection, ExternalDetector, external_detect
from .gt import GroundTruthStore, GTInstance
from .oracle import OracleDetector, OracleNoiseModel, SplitMix64, oracle_detect
from .rle import RleError, decode_rle, encode_mask_rle, encode_rle, parse_mask_rle

__all__ = [
    "Detector", "DetectorClosed", "DetectorConnection", "DetectorError", "DetectorUnavailable",
    "ExternalDetector", "FailingDetector", "FixedCostDetector", "GTInstance", "GroundTruthStore",
    "NullDetector", "OracleDetector", "OracleNoiseModel", "ProtocolError", "RleError",
    "SplitMix64", "decode_rle", "encode_mask_rle", "encode_rle", "external_detect",
    "oracle_detect", "parse_mask_rle",
]
