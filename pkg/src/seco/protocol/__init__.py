"""Four-party split inference: user, gateway server A and remote servers B and C."""
from seco.protocol.engine import ConfigError, InferenceResult, Session, run_inferences, run_party, validate_config
from seco.protocol.messages import Kind, PartyId, Phase, ProtocolError
from seco.protocol.parties import ProtocolConfig, StageShape

__all__ = [
    "ConfigError", "InferenceResult", "Kind", "PartyId", "Phase", "ProtocolConfig", "ProtocolError",
    "Session", "StageShape", "run_inferences", "run_party", "validate_config",
]
