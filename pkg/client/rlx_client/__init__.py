"""Standalone broker client: an independent implementation of the tensor
wire protocol using only the standard library, for cross-implementation
conformance testing and out-of-tree environments."""

from .wire import (Dtype, Message, Opcode, Response, Status, Tensor,
                   decode_message, decode_response, encode_message,
                   encode_response)
from .client import BrokerClient, BrokerUnavailable, PollTimeout

__all__ = [
    "Dtype", "Message", "Opcode", "Response", "Status", "Tensor",
    "decode_message", "decode_response", "encode_message", "encode_response",
    "BrokerClient", "BrokerUnavailable", "PollTimeout",
]
