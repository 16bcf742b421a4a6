"""HTTP API for the interactive constraint explorer.

A panel is uploaded and fitted once per session; every decomposition request
afterwards is a closed-form shift along the null direction, so slider-driven
re-identification is effectively instant. All JSON bodies are produced by the
same serializers as the CLI, byte for byte.
"""

from __future__ import annotations

import json
import threading
import uuid
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import FastAPI, Request, Response
from fastapi.middleware.cors import CORSMiddleware

from .design import EmvDesign, build_design
from .estimator import FitResult, fit_linear
from .forecast import ForecastSpec, forecast
from .identify import ConstraintSpec, apply_constraint, decomposition_to_csv, decomposition_to_json
from .macro import MacroPanel, load_macro
from .panel import PanelError, PanelGrid, ResponseTransform, load_panel
from .cli import macro_fit_payload, sweep_payload

__all__ = ["create_app"]


def _dump(payload) -> str:
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"


def _json_response(text: str, status_code: int = 200) -> Response:
    return Response(content=text, media_type="application/json", status_code=status_code)


def _error(status: int, message: str) -> Response:
    return _json_response(_dump({"error": message}), status_code=status)


@dataclass
class Session:
    session_id: str
    panel_csv: str
    transform: ResponseTransform
    grid: PanelGrid | None = None
    design: EmvDesign | None = None
    fit: FitResult | None = None
    macro: MacroPanel | None = None
    macro_csv: str | None = None
    status: str = "pending"
    error: str | None = None
    error_status: int = 422
    decomposition_cache: dict[str, str] = field(default_factory=dict)
    lock: threading.Lock = field(default_factory=threading.Lock)

    def run_fit(self) -> None:
        try:
            grid = load_panel(self.panel_csv)
        except PanelError as exc:
            self.error = f"malformed upload: {exc}"
            self.error_status = 400
            self.status = "failed"
            return
        try:
            design = build_design(grid)
            fit = fit_linear(design, grid, self.transform)
        except ValueError as exc:
            self.error = str(exc)
            self.status = "failed"
            return
        self.grid = grid
        self.design = design
        self.fit = fit
        self.status = "ready"

    def diagnostics(self) -> dict:
        base = {"session_id": self.session_id, "status": self.status}
        if self.status == "failed":
            base["error"] = self.error
        if self.fit is not None:
            base["diagnostics"] = {
                "n_obs": self.fit.n_obs,
                "dof": self.fit.dof,
                "r_squared": float(self.fit.r_squared),
                "residual_ss": float(self.fit.residual_ss),
                "transform": self.fit.transform.to_dict(),
            }
        return base


def _extract_csv_body(body: bytes, content_type: str) -> str:
    """Raw CSV body, or the first file part of a multipart/form-data body."""
    if content_type.startswith("multipart/form-data"):
        marker = content_type.split("boundary=")
        if len(marker) != 2:
            raise ValueError("multipart body without boundary")
        boundary = ("--" + marker[1].strip().strip('"')).encode()
        for part in body.split(boundary):
            if b"\r\n\r\n" not in part:
                continue
            head, _, payload = part.partition(b"\r\n\r\n")
            if b"filename=" in head or b'name="panel"' in head or b'name="file"' in head:
                return payload.rstrip(b"\r\n-").decode("utf-8")
        raise ValueError("multipart body contained no file part")
    return body.decode("utf-8")


CONTENT_TYPES = {".html": "text/html", ".css": "text/css", ".js": "text/javascript", ".map": "application/json"}


def create_app(
    persist_dir: str | None = None,
    fit_async_threshold: int = 200_000,
    ui_dir: str | None = None,
) -> FastAPI:
    """Build the service; sessions are in-memory with optional JSON snapshots.

    Panels larger than ``fit_async_threshold`` observed cells are fitted in a
    background thread; endpoints answer 202 with a pending status until done.
    ``ui_dir`` (the built frontend directory) is served statically when given.
    """
    app = FastAPI(title="emvkit service")
    app.add_middleware(
        CORSMiddleware,
        allow_origin_regex=r"https?://(localhost|127\.0\.0\.1)(:\d+)?",
        allow_methods=["*"],
        allow_headers=["*"],
    )
    sessions: dict[str, Session] = {}
    registry_lock = threading.Lock()
    persist_path = Path(persist_dir) if persist_dir else None
    if persist_path:
        persist_path.mkdir(parents=True, exist_ok=True)

    def persist(session: Session) -> None:
        if not persist_path:
            return
        snapshot = {
            "session_id": session.session_id,
            "panel_csv": session.panel_csv,
            "transform": session.transform.to_dict(),
            "macro_csv": session.macro_csv,
        }
        (persist_path / f"{session.session_id}.json").write_text(_dump(snapshot), encoding="utf-8")

    def restore() -> None:
        if not persist_path:
            return
        for f in sorted(persist_path.glob("*.json")):
            snap = json.loads(f.read_text(encoding="utf-8"))
            session = Session(
                session_id=snap["session_id"],
                panel_csv=snap["panel_csv"],
                transform=ResponseTransform.from_dict(snap["transform"]),
            )
            session.run_fit()
            if snap.get("macro_csv"):
                session.macro_csv = snap["macro_csv"]
                session.macro = load_macro(snap["macro_csv"])
            sessions[session.session_id] = session

    restore()

    def get_session(session_id: str) -> Session | Response:
        session = sessions.get(session_id)
        if session is None:
            return _error(404, f"unknown session {session_id}")
        return session

    def require_ready(session: Session) -> Response | None:
        if session.status == "pending":
            return _json_response(_dump({"session_id": session.session_id, "status": "pending"}), 202)
        if session.status == "failed":
            return _error(session.error_status, session.error or "fit failed")
        return None

    @app.get("/healthz")
    def healthz():
        return {"status": "ok"}

    if ui_dir:
        ui_root = Path(ui_dir).resolve()

        def serve_static(rel: str) -> Response:
            target = (ui_root / rel).resolve()
            if not str(target).startswith(str(ui_root)) or not target.is_file():
                return _error(404, f"no such file {rel}")
            media = CONTENT_TYPES.get(target.suffix, "application/octet-stream")
            return Response(content=target.read_bytes(), media_type=media)

        @app.get("/")
        def ui_index():
            return serve_static("index.html")

        @app.get("/styles.css")
        def ui_styles():
            return serve_static("styles.css")

        @app.get("/dist/{filename}")
        def ui_dist(filename: str):
            return serve_static(f"dist/{filename}")

    @app.post("/sessions")
    async def create_session(request: Request, transform: str = "identity", epsilon: float = 1e-9):
        try:
            csv_text = _extract_csv_body(await request.body(), request.headers.get("content-type", ""))
        except (ValueError, UnicodeDecodeError) as exc:
            return _error(400, f"malformed upload: {exc}")
        if not csv_text.strip():
            return _error(400, "malformed upload: empty body")
        try:
            g = ResponseTransform(kind=transform, epsilon=epsilon)
        except ValueError as exc:
            return _error(422, str(exc))
        session = Session(session_id=uuid.uuid4().hex[:12], panel_csv=csv_text, transform=g)
        with registry_lock:
            sessions[session.session_id] = session
        # size estimate: fit synchronously unless the panel is large
        n_rows = csv_text.count("\n")
        if n_rows > fit_async_threshold:
            threading.Thread(target=session.run_fit, daemon=True).start()
        else:
            session.run_fit()
        persist(session)
        if session.status == "failed":
            return _error(session.error_status, session.error or "fit failed")
        code = 202 if session.status == "pending" else 200
        return _json_response(_dump(session.diagnostics()), code)

    @app.get("/sessions/{session_id}")
    def session_info(session_id: str):
        session = get_session(session_id)
        if isinstance(session, Response):
            return session
        return _json_response(_dump(session.diagnostics()))

    @app.post("/sessions/{session_id}/macro")
    async def upload_macro(session_id: str, request: Request):
        session = get_session(session_id)
        if isinstance(session, Response):
            return session
        try:
            csv_text = _extract_csv_body(await request.body(), request.headers.get("content-type", ""))
            macro_panel = load_macro(csv_text)
        except (ValueError, UnicodeDecodeError) as exc:
            return _error(400, f"malformed upload: {exc}")
        with session.lock:
            session.macro = macro_panel
            session.macro_csv = csv_text
        persist(session)
        return _json_response(_dump({"session_id": session_id, "macro_covariates": list(macro_panel.names)}))

    @app.get("/sessions/{session_id}/decomposition")
    def decomposition(
        session_id: str,
        kind: str = "intrinsic",
        k: float = 0.0,
        a_star: int = 60,
        window: int = 18,
        se: bool = False,
        format: str = "json",
    ):
        session = get_session(session_id)
        if isinstance(session, Response):
            return session
        pending = require_ready(session)
        if pending is not None:
            return pending
        if format not in ("json", "csv"):
            return _error(400, f"unknown format {format!r}; expected json or csv")
        try:
            spec = ConstraintSpec(kind=kind, k=k, a_star=a_star, window=window)
            cache_key = spec.cache_key() + (":se" if se else "") + f":{format}"
            with session.lock:
                cached = session.decomposition_cache.get(cache_key)
            if cached is None:
                dec = apply_constraint(session.fit, session.design, spec, include_se=se)
                cached = decomposition_to_csv(dec) if format == "csv" else decomposition_to_json(dec)
                with session.lock:
                    session.decomposition_cache[cache_key] = cached
            if format == "csv":
                return Response(content=cached, media_type="text/csv")
            return _json_response(cached)
        except ValueError as exc:
            return _error(422, str(exc))

    @app.get("/sessions/{session_id}/sweep")
    def sweep(session_id: str, ks: str = "0,-0.01,-0.02", a_star: int = 60):
        session = get_session(session_id)
        if isinstance(session, Response):
            return session
        pending = require_ready(session)
        if pending is not None:
            return pending
        try:
            k_list = [float(v) for v in ks.split(",") if v.strip() != ""]
        except ValueError:
            return _error(400, f"could not parse ks {ks!r}")
        try:
            payload = sweep_payload(session.fit, session.design, a_star, k_list)
            return _json_response(_dump(payload))
        except ValueError as exc:
            return _error(422, str(exc))

    @app.get("/sessions/{session_id}/macro-fit")
    def macro_fit(session_id: str):
        session = get_session(session_id)
        if isinstance(session, Response):
            return session
        pending = require_ready(session)
        if pending is not None:
            return pending
        if session.macro is None:
            return _error(422, "no macro covariates uploaded for this session")
        try:
            payload, _, _ = macro_fit_payload(session.grid, session.macro, session.transform)
            return _json_response(_dump(payload))
        except ValueError as exc:
            return _error(422, str(exc))

    @app.get("/sessions/{session_id}/forecast")
    def forecast_endpoint(
        session_id: str,
        horizon: int = 12,
        maturity_tail: str = "straight-line",
        a_star: int = 60,
        vintage_mode: str = "recent-level",
        window: int = 18,
        kind: str = "maturity-slope",
        k: float = 0.0,
        original_scale: bool = False,
    ):
        session = get_session(session_id)
        if isinstance(session, Response):
            return session
        pending = require_ready(session)
        if pending is not None:
            return pending
        try:
            spec = ForecastSpec(
                horizon_months=horizon,
                maturity_tail=maturity_tail,
                a_star=a_star,
                vintage_mode=vintage_mode,
                vintage_window=window,
                macro_future=session.macro,
                original_scale=original_scale,
            )
            if session.macro is not None:
                from .macro import fit_semiparametric

                source = fit_semiparametric(session.grid, session.macro, session.transform)
            else:
                cspec = ConstraintSpec(kind=kind, k=k, a_star=a_star, window=window)
                source = apply_constraint(session.fit, session.design, cspec)
            result = forecast(source, spec, grid=session.grid, transform=session.transform)
            return _json_response(result.to_json())
        except ValueError as exc:
            return _error(422, str(exc))

    return app
