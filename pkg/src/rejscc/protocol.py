"""Progressive block transmission with re-encode-on-CSI-change semantics.

A session encodes one image (or a batch sharing one schedule) into m blocks,
transmits them in order, and on every CSI change re-encodes the untransmitted
blocks from the cached originals, never from a previous re-encoding. The
receiver collects equalized blocks per segment, maps each non-initial segment
back to initial-CSI space, and decodes the reassembled vector.
"""

import hashlib
from dataclasses import dataclass, field

import torch

from .channel import equalize, transmit
from .errors import ProtocolError
from .latent import (
    SymbolBlocks,
    complex_to_real,
    matrix_to_symbols,
    mean_symbol_power,
    real_to_complex,
)
from .model import Codec


def _snr_tensor(state, batch: int, device, dtype) -> torch.Tensor:
    value = state.effective_snr_db()
    if isinstance(value, torch.Tensor):
        return value.to(device=device, dtype=dtype).expand(batch).clone()
    return torch.full((batch,), float(value), device=device, dtype=dtype)


def _fingerprint(tensor: torch.Tensor) -> str:
    data = tensor.detach().cpu().contiguous().numpy().tobytes()
    return hashlib.sha256(data).hexdigest()[:16]


@dataclass
class SegmentRecord:
    """Blocks v..t (1-indexed, inclusive) received under one channel state."""

    first_block: int
    last_block: int
    state: object
    received: torch.Tensor  # (B, d, t - v + 1), equalized, current-CSI space
    initial: bool  # transmitted under the session's initial state

    @property
    def num_blocks(self) -> int:
        return self.last_block - self.first_block + 1


@dataclass
class TransmitterSession:
    model: Codec
    original: SymbolBlocks
    initial_state: object
    initial_snr_db: torch.Tensor  # (B,)
    conditioning_snr_db: torch.Tensor  # (B,) CSI fed to the static codec
    current_state: object
    current_snr_db: torch.Tensor
    current_encoding: torch.Tensor  # (B, d, m - p + 1), block p first
    next_block: int = 1
    changed: bool = False  # any CSI change so far this session
    segments: list = field(default_factory=list)
    trace: list | None = None
    _open_blocks: list = field(default_factory=list)
    _open_first: int = 1
    _open_initial: bool = True

    @property
    def num_blocks(self) -> int:
        return self.original.num_blocks

    @property
    def complete(self) -> bool:
        return self.next_block > self.num_blocks

    def _record(self, event: dict) -> None:
        if self.trace is not None:
            self.trace.append(event)


def _resolve_conditioning(model: Codec, initial_snr_db: torch.Tensor, override):
    if model.cfg.variant == "static-fixed-snr":
        return torch.full_like(initial_snr_db, model.cfg.fixed_snr_db)
    if override is None:
        return initial_snr_db
    if isinstance(override, torch.Tensor):
        return override.to(initial_snr_db).expand_as(initial_snr_db).clone()
    return torch.full_like(initial_snr_db, float(override))


def start_session(
    image: torch.Tensor,
    state0,
    model: Codec,
    conditioning_snr_db=None,
    record_trace: bool = False,
) -> TransmitterSession:
    """Encode the image under the initial CSI and open the session at block 1."""
    batch = image.shape[0]
    initial_snr = _snr_tensor(state0, batch, image.device, image.dtype)
    cond = _resolve_conditioning(model, initial_snr, conditioning_snr_db)
    original = model.static_encoder(image, cond)
    session = TransmitterSession(
        model=model,
        original=original,
        initial_state=state0,
        initial_snr_db=initial_snr,
        conditioning_snr_db=cond,
        current_state=state0,
        current_snr_db=initial_snr,
        current_encoding=original.as_matrix(),
        trace=[] if record_trace else None,
    )
    session._record(
        {
            "event": "encode",
            "num_symbols": original.num_symbols,
            "num_blocks": original.num_blocks,
            "mean_power": original.mean_power().mean().item(),
        }
    )
    return session


def _seal_segment(session: TransmitterSession) -> None:
    if not session._open_blocks:
        return
    received = torch.stack(session._open_blocks, dim=-1)
    session.segments.append(
        SegmentRecord(
            first_block=session._open_first,
            last_block=session._open_first + len(session._open_blocks) - 1,
            state=session.current_state,
            received=received,
            initial=session._open_initial,
        )
    )
    session._open_blocks = []


def on_csi_change(session: TransmitterSession, new_state) -> None:
    """Re-encode the untransmitted blocks from the cached originals for the new CSI.

    Successive changes without transmission in between each re-encode the same
    original slice, so only the latest CSI matters. A no-op once the session
    is complete.
    """
    if session.complete:
        return
    _seal_segment(session)
    p = session.next_block
    batch = session.initial_snr_db.shape[0]
    new_snr = _snr_tensor(
        new_state, batch, session.initial_snr_db.device, session.initial_snr_db.dtype
    )
    remaining = session.original.as_matrix()[:, :, p - 1 :]
    if session.model.has_refinement:
        encoded = session.model.re_encoder(remaining, session.initial_snr_db, new_snr)
    else:
        encoded = remaining
    session.current_encoding = encoded
    session.current_state = new_state
    session.current_snr_db = new_snr
    session.changed = True
    session._open_first = p
    session._open_initial = False
    if session.trace is not None:
        session.trace.append(
            {
                "event": "csi_change",
                "next_block": p,
                "remaining_blocks": remaining.shape[-1],
                "effective_snr_db": new_snr.mean().item(),
                "bypassed": bool(torch.equal(encoded, remaining)),
                "mean_power": mean_symbol_power(
                    matrix_to_symbols(encoded, encoded.shape[-1])
                ).mean().item(),
                "_reencode_input": remaining.detach().clone(),
                "_reencode_output": encoded.detach().clone(),
            }
        )


def transmit_next_block(session: TransmitterSession, generator: torch.Generator) -> torch.Tensor:
    """Send block p through the channel; the receiver stores the equalized block."""
    if session.complete:
        raise ProtocolError("all blocks already transmitted for this session")
    block = session.current_encoding[:, :, 0]
    z = real_to_complex(block)
    received = complex_to_real(equalize(transmit(z, session.current_state, generator),
                                        session.current_state))
    session._open_blocks.append(received)
    session._record(
        {
            "event": "block",
            "index": session.next_block,
            "mean_power": mean_symbol_power(block).mean().item(),
        }
    )
    session.next_block += 1
    session.current_encoding = session.current_encoding[:, :, 1:]
    return received


def finish_transmission(session: TransmitterSession) -> list[SegmentRecord]:
    if not session.complete:
        raise ProtocolError(
            f"session incomplete: next block {session.next_block} of {session.num_blocks}"
        )
    _seal_segment(session)
    return session.segments


def receiver_finalize(
    segments: list[SegmentRecord],
    model: Codec,
    initial_snr_db: torch.Tensor,
    conditioning_snr_db=None,
) -> torch.Tensor:
    """Map each non-initial segment back to initial-CSI space and decode the image."""
    if not segments:
        raise ProtocolError("no segments received")
    expected = 1
    for seg in segments:
        if seg.first_block != expected:
            raise ProtocolError(
                f"segment coverage broken: expected block {expected}, got {seg.first_block}"
            )
        expected = seg.last_block + 1
    num_blocks = segments[-1].last_block
    cond = _resolve_conditioning(model, initial_snr_db, conditioning_snr_db)
    decoded = []
    for seg in segments:
        if seg.initial or not model.has_refinement:
            decoded.append(seg.received)
            continue
        batch = seg.received.shape[0]
        seg_snr = _snr_tensor(
            seg.state, batch, initial_snr_db.device, initial_snr_db.dtype
        )
        decoded.append(model.dynamic_decoder(seg.received, initial_snr_db, seg_snr))
    symbols = matrix_to_symbols(torch.cat(decoded, dim=-1), num_blocks)
    return model.static_decoder(symbols, cond)


@dataclass
class SessionResult:
    image_hat: torch.Tensor
    segments: list
    session: TransmitterSession

    @property
    def trace(self):
        return self.session.trace


def run_session(
    image: torch.Tensor,
    schedule,
    model: Codec,
    generator: torch.Generator,
    conditioning_snr_db=None,
    record_trace: bool = False,
) -> SessionResult:
    """Drive one full session over an EpisodeSchedule and decode the result."""
    if schedule.num_blocks != model.cfg.num_blocks:
        raise ProtocolError(
            f"schedule covers {schedule.num_blocks} blocks, model uses {model.cfg.num_blocks}"
        )
    session = start_session(
        image,
        schedule.initial_state,
        model,
        conditioning_snr_db=conditioning_snr_db,
        record_trace=record_trace,
    )
    for i, (count, state) in enumerate(schedule.segments):
        if i > 0:
            on_csi_change(session, state)
        for _ in range(count):
            transmit_next_block(session, generator)
    segments = finish_transmission(session)
    image_hat = receiver_finalize(
        segments, model, session.initial_snr_db, session.conditioning_snr_db
    )
    return SessionResult(image_hat=image_hat, segments=segments, session=session)


def segment_stats(result: SessionResult, model: Codec) -> list[dict]:
    """Per-segment distortion summary for debugging a finished session.

    channel_mse compares the equalized blocks against what the transmitter
    sent for that segment; recovered_mse compares the receiver's
    initial-CSI-space estimate against the cached originals.
    """
    session = result.session
    originals = session.original.as_matrix()
    stats = []
    with torch.no_grad():
        for seg in result.segments:
            sl = slice(seg.first_block - 1, seg.last_block)
            batch = seg.received.shape[0]
            seg_snr = _snr_tensor(
                seg.state, batch, session.initial_snr_db.device,
                session.initial_snr_db.dtype,
            )
            if seg.initial or not model.has_refinement:
                sent = originals[:, :, sl]
                recovered = seg.received
            else:
                sent = model.re_encoder(
                    originals[:, :, seg.first_block - 1 :],
                    session.initial_snr_db, seg_snr,
                )[:, :, : seg.num_blocks]
                recovered = model.dynamic_decoder(
                    seg.received, session.initial_snr_db, seg_snr
                )
            stats.append(
                {
                    "first_block": seg.first_block,
                    "last_block": seg.last_block,
                    "effective_snr_db": seg_snr.mean().item(),
                    "channel_mse": (seg.received - sent).square().mean().item(),
                    "recovered_mse": (recovered - originals[:, :, sl]).square().mean().item(),
                }
            )
    return stats


def trace_records(trace: list) -> list[dict]:
    """JSON-safe copy of a session trace; tensors become fingerprints."""
    records = []
    for event in trace:
        rec = {}
        for key, value in event.items():
            if isinstance(value, torch.Tensor):
                rec[key.lstrip("_") + "_sha256"] = _fingerprint(value)
            else:
                rec[key] = value
        records.append(rec)
    return records
