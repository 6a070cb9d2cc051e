"""Edge-server collaboration manager.

The core is :func:`handle_message`, a pure function from (registry, message) to
(new registry, outbound messages). :func:`serve` wraps it in a newline-delimited
JSON server over TCP; every connection's messages are serialized through one
lock so the registry sees a single total order.

Frames (one JSON object per LF-terminated line)::

    {"type":"REGISTER","session_id":"s1","initiator_id":"a1","collaborator_id":"a2","reference":{...},"delta":0.85}
    {"type":"TELEMETRY","session_id":"s1","record":{"slot":1,"delay_ms":19.2,"subtasks":12,"cpu":0.31,"cmpl_ms":41.0,"efc":1}}
    {"type":"DEREGISTER","session_id":"s1"}
    {"type":"VERDICT","session_id":"s1","slot":1,"similarity":0.998,"trusted":true,"seq":1}
    {"type":"TERMINATE","session_id":"s1","slot":4,"seq":5}
    {"type":"ERROR","session_id":"s1","code":"unknown_session","detail":"...","seq":1}

Inbound frames may carry ``seq``; when present it must increase per session.
Outbound frames always carry a per-session ``seq`` starting at 1.
"""
from __future__ import annotations

import asyncio
import enum
import json
import logging
from dataclasses import dataclass, field, replace
from typing import Mapping

from .embed import ModelParams
from .evaluation import reference_embedding, score_slot
from .telemetry import SlotRecord

log = logging.getLogger(__name__)


class Status(enum.Enum):
    Active = "active"
    Terminated = "terminated"
    Closed = "closed"


# -- wire messages ------------------------------------------------------------------

@dataclass(frozen=True)
class Register:
    session_id: str
    initiator_id: str
    collaborator_id: str
    reference: SlotRecord
    delta: float
    seq: int | None = None


@dataclass(frozen=True)
class Telemetry:
    session_id: str
    record: SlotRecord
    seq: int | None = None


@dataclass(frozen=True)
class Deregister:
    session_id: str
    seq: int | None = None


@dataclass(frozen=True)
class Verdict:
    session_id: str
    slot: int
    similarity: float
    trusted: bool
    seq: int
    degenerate: bool = False


@dataclass(frozen=True)
class Terminate:
    session_id: str
    slot: int
    seq: int


@dataclass(frozen=True)
class Error:
    session_id: str | None
    code: str
    detail: str
    seq: int


WireMessage = Register | Telemetry | Deregister | Verdict | Terminate | Error


class MalformedMessage(ValueError):
    def __init__(self, code: str, detail: str, session_id: str | None = None):
        super().__init__(detail)
        self.code = code
        self.session_id = session_id


def _str_field(obj: Mapping, key: str, sid: str | None = None) -> str:
    v = obj.get(key)
    if not isinstance(v, str) or not v:
        raise MalformedMessage("malformed", f"field {key!r} must be a non-empty string", sid)
    return v


def decode(line: str | bytes) -> WireMessage:
    """Parse one inbound frame. Raises :class:`MalformedMessage`."""
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise MalformedMessage("malformed", f"invalid JSON at char {exc.pos}") from None
    except UnicodeDecodeError:
        raise MalformedMessage("malformed", "frame is not valid UTF-8") from None
    if not isinstance(obj, dict):
        raise MalformedMessage("malformed", "frame must be a JSON object")
    kind = obj.get("type")
    sid = _str_field(obj, "session_id") if kind in ("REGISTER", "TELEMETRY", "DEREGISTER") else None
    seq = obj.get("seq")
    if seq is not None and (not isinstance(seq, int) or isinstance(seq, bool) or seq < 0):
        raise MalformedMessage("malformed", "seq must be a non-negative integer", sid)
    try:
        if kind == "REGISTER":
            delta = obj.get("delta")
            if isinstance(delta, bool) or not isinstance(delta, (int, float)) or not 0.0 < delta <= 1.0:
                raise MalformedMessage("malformed", "delta must be a number in (0, 1]", sid)
            return Register(sid, _str_field(obj, "initiator_id", sid), _str_field(obj, "collaborator_id", sid),
                            SlotRecord.from_wire(obj["reference"]), float(delta), seq)
        if kind == "TELEMETRY":
            return Telemetry(sid, SlotRecord.from_wire(obj["record"]), seq)
        if kind == "DEREGISTER":
            return Deregister(sid, seq)
    except KeyError as exc:
        raise MalformedMessage("malformed", f"missing field {exc}", sid) from None
    except (TypeError, ValueError, AttributeError) as exc:
        if isinstance(exc, MalformedMessage):
            raise
        raise MalformedMessage("malformed", str(exc), sid) from None
    raise MalformedMessage("unknown_type", f"unsupported message type {kind!r}", None)


def to_wire(msg: WireMessage) -> dict:
    if isinstance(msg, Verdict):
        out = {"type": "VERDICT", "session_id": msg.session_id, "slot": msg.slot,
               "similarity": msg.similarity, "trusted": msg.trusted, "seq": msg.seq}
        if msg.degenerate:
            out["degenerate"] = True
        return out
    if isinstance(msg, Terminate):
        return {"type": "TERMINATE", "session_id": msg.session_id, "slot": msg.slot, "seq": msg.seq}
    if isinstance(msg, Error):
        return {"type": "ERROR", "session_id": msg.session_id, "code": msg.code, "detail": msg.detail, "seq": msg.seq}
    if isinstance(msg, Register):
        out = {"type": "REGISTER", "session_id": msg.session_id, "initiator_id": msg.initiator_id,
               "collaborator_id": msg.collaborator_id, "reference": msg.reference.to_wire(), "delta": msg.delta}
    elif isinstance(msg, Telemetry):
        out = {"type": "TELEMETRY", "session_id": msg.session_id, "record": msg.record.to_wire()}
    elif isinstance(msg, Deregister):
        out = {"type": "DEREGISTER", "session_id": msg.session_id}
    else:
        raise TypeError(f"not a wire message: {msg!r}")
    if msg.seq is not None:
        out["seq"] = msg.seq
    return out


def encode(msg: WireMessage) -> str:
    return json.dumps(to_wire(msg), separators=(",", ":")) + "\n"


# -- registry state machine -----------------------------------------------------------

@dataclass(frozen=True)
class Session:
    session_id: str
    initiator_id: str
    collaborator_id: str
    reference: SlotRecord
    delta: float
    status: Status = Status.Active
    slots_seen: int = 0


@dataclass(frozen=True)
class Registry:
    sessions: Mapping[str, Session] = field(default_factory=dict)
    out_seq: Mapping[str | None, int] = field(default_factory=dict)
    in_seq: Mapping[str, int] = field(default_factory=dict)


class _Outbox:
    """Stamps outbound messages with gapless per-session sequence numbers."""

    def __init__(self, counters: Mapping[str | None, int]):
        self.counters = dict(counters)
        self.messages: list[WireMessage] = []

    def _next(self, sid):
        self.counters[sid] = self.counters.get(sid, 0) + 1
        return self.counters[sid]

    def verdict(self, sid, slot, similarity, trusted, degenerate):
        self.messages.append(Verdict(sid, slot, similarity, trusted, self._next(sid), degenerate))

    def terminate(self, sid, slot):
        self.messages.append(Terminate(sid, slot, self._next(sid)))

    def error(self, sid, code, detail):
        self.messages.append(Error(sid, code, detail, self._next(sid)))


def _with_session(state: Registry, session: Session, outbox: _Outbox, in_seq=None) -> Registry:
    sessions = dict(state.sessions)
    sessions[session.session_id] = session
    seqs = dict(state.in_seq)
    if in_seq is not None:
        seqs[session.session_id] = in_seq
    return Registry(sessions, outbox.counters, seqs)


def handle_message(state: Registry, msg: WireMessage, model: ModelParams) -> tuple[Registry, list[WireMessage]]:
    """Advance the registry by one inbound message. Pure and deterministic."""
    out = _Outbox(state.out_seq)
    sid = msg.session_id
    session = state.sessions.get(sid)

    def fail(code, detail):
        out.error(sid, code, detail)
        return Registry(state.sessions, out.counters, state.in_seq), out.messages

    if msg.seq is not None and sid in state.in_seq and msg.seq <= state.in_seq[sid]:
        return fail("stale_seq", f"seq {msg.seq} not above last seen {state.in_seq[sid]}")

    if isinstance(msg, Register):
        if session is not None:
            return fail("duplicate_session", f"session {sid!r} already registered")
        new = Session(sid, msg.initiator_id, msg.collaborator_id, msg.reference, msg.delta)
        return _with_session(state, new, out, msg.seq), out.messages

    if session is None:
        return fail("unknown_session", f"no session {sid!r}")

    if isinstance(msg, Telemetry):
        if session.status is not Status.Active:
            return fail(f"session_{session.status.value}", f"session {sid!r} is {session.status.value}")
        v = score_slot(model, reference_embedding(model, session.reference), msg.record, session.delta)
        out.verdict(sid, v.slot_index, v.similarity, v.trusted, v.degenerate)
        new = replace(session, slots_seen=session.slots_seen + 1)
        if not v.trusted:
            out.terminate(sid, v.slot_index)
            new = replace(new, status=Status.Terminated)
        return _with_session(state, new, out, msg.seq), out.messages

    if isinstance(msg, Deregister):
        if session.status is Status.Closed:
            return fail("session_closed", f"session {sid!r} already deregistered")
        new = replace(session, status=Status.Closed) if session.status is Status.Active else session
        return _with_session(state, new, out, msg.seq), out.messages

    return fail("unknown_type", f"{type(msg).__name__} is not an inbound message")


def handle_line(state: Registry, line: str | bytes, model: ModelParams) -> tuple[Registry, list[WireMessage]]:
    """Decode one frame and apply it; malformed frames produce an ERROR."""
    try:
        msg = decode(line)
    except MalformedMessage as exc:
        out = _Outbox(state.out_seq)
        out.error(exc.session_id, exc.code, str(exc))
        return Registry(state.sessions, out.counters, state.in_seq), out.messages
    return handle_message(state, msg, model)


def shutdown_sessions(state: Registry) -> tuple[Registry, list[WireMessage]]:
    """Close every active session, telling each one the server is going away."""
    out = _Outbox(state.out_seq)
    sessions = dict(state.sessions)
    for sid, s in sorted(state.sessions.items()):
        if s.status is Status.Active:
            out.error(sid, "shutdown", "edge server shutting down")
            sessions[sid] = replace(s, status=Status.Closed)
    return Registry(sessions, out.counters, state.in_seq), out.messages


def replay(lines, model: ModelParams, state: Registry | None = None) -> tuple[Registry, list[str]]:
    """Feed a transcript of inbound frames; return the final registry and encoded outbound frames."""
    state = state or Registry()
    emitted = []
    for line in lines:
        state, msgs = handle_line(state, line, model)
        emitted.extend(encode(m) for m in msgs)
    return state, emitted


# -- network server -------------------------------------------------------------------

class EdgeServer:
    def __init__(self, model: ModelParams):
        self.model = model
        self.state = Registry()
        self.attached: dict[str, set[asyncio.StreamWriter]] = {}
        self.owned: dict[asyncio.StreamWriter, set[str]] = {}
        self._lock = asyncio.Lock()
        self._writers: set[asyncio.StreamWriter] = set()

    async def _deliver(self, sender, msgs):
        for m in msgs:
            targets = set(self.attached.get(m.session_id, ()))
            if sender is not None:
                targets.add(sender)
            frame = encode(m).encode("utf-8")
            for w in targets:
                try:
                    w.write(frame)
                except (ConnectionError, RuntimeError):
                    pass
        for w in list(self._writers):
            try:
                await w.drain()
            except ConnectionError:
                pass

    async def _apply(self, writer, line: bytes):
        async with self._lock:
            self.state, msgs = handle_line(self.state, line, self.model)
            try:
                sid = json.loads(line).get("session_id")
            except (ValueError, AttributeError):
                sid = None
            if isinstance(sid, str) and sid in self.state.sessions:
                self.attached.setdefault(sid, set()).add(writer)
                self.owned.setdefault(writer, set()).add(sid)
            await self._deliver(writer, msgs)

    async def handle_connection(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter):
        self._writers.add(writer)
        try:
            while True:
                line = await reader.readline()
                if not line:
                    break
                if line.strip():
                    await self._apply(writer, line)
        except (ConnectionError, asyncio.IncompleteReadError, asyncio.LimitOverrunError, ValueError) as exc:
            log.warning("connection dropped: %s", exc)
        finally:
            await self._drop(writer)

    async def _drop(self, writer):
        self._writers.discard(writer)
        async with self._lock:
            for sid in sorted(self.owned.pop(writer, ())):
                conns = self.attached.get(sid, set())
                conns.discard(writer)
                s = self.state.sessions.get(sid)
                if s is not None and s.status is Status.Active and not conns:
                    self.state, msgs = handle_message(self.state, Deregister(sid), self.model)
        writer.close()

    async def shutdown(self):
        async with self._lock:
            self.state, msgs = shutdown_sessions(self.state)
            await self._deliver(None, msgs)
        for w in list(self._writers):
            w.close()


async def serve(host: str, port: int, model: ModelParams, stop: asyncio.Event | None = None, on_ready=None) -> EdgeServer:
    """Run the edge server until ``stop`` is set (or forever)."""
    edge = EdgeServer(model)
    server = await asyncio.start_server(edge.handle_connection, host, port)
    if on_ready is not None:
        on_ready(server.sockets[0].getsockname())
    stop = stop or asyncio.Event()
    async with server:
        await stop.wait()
        server.close()
        await edge.shutdown()
    return edge
