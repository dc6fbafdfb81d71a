"""Batch chat client for the captioning and judging endpoints.

Reads a batch request file (one JSON request per line), POSTs each request
to the configured endpoint, and writes a response file mirroring every
request_id.  Judge (mdvl-kind) replies are validated with the core parser;
a reply that stays malformed after the repair rule is retried up to
``max_retries`` times, then passed through verbatim for the core to count.
Network and auth failures mark that request FAILED without aborting the
batch.  A rendered keyframe grid is attached to every mdvl request when a
clips directory is available.
"""

from __future__ import annotations

import base64
import json
import logging
from pathlib import Path

import requests

from cinebench.captions import (BatchRequest, BatchResponse,
                                read_batch_requests, write_batch_responses)
from cinebench.errors import MetricError
from cinebench.mdvl import parse_mdvl_response

from .config import ExtractorConfig
from .grid import FrameResolveError, encode_png, render_mdvl_grid

logger = logging.getLogger(__name__)


def _payload(request: BatchRequest, config: ExtractorConfig) -> dict:
    body: dict = {
        "request_id": request.request_id,
        "kind": request.kind,
        "messages": [
            {"role": "system", "content": request.request.system_text},
            {"role": "user", "content": request.request.user_text},
        ],
    }
    if request.kind == "mdvl" and config.clips_dir is not None:
        attachments = [(a.clip_id, a.frame) for a in request.request.attachments]
        try:
            grid = render_mdvl_grid(config.clips_dir, attachments)
            body["images"] = [base64.b64encode(encode_png(grid)).decode("ascii")]
        except (FrameResolveError, ValueError) as exc:
            logger.warning("grid rendering failed for %s: %s",
                           request.request_id, exc)
    return body


def _extract_text(data: dict) -> str:
    if "text" in data:
        return str(data["text"])
    choices = data.get("choices")
    if choices:
        return str(choices[0].get("message", {}).get("content", ""))
    raise ValueError("response carries neither 'text' nor 'choices'")


def _call_once(request: BatchRequest, config: ExtractorConfig,
               session: requests.Session) -> str:
    headers = {"Content-Type": "application/json"}
    if config.api_key:
        headers["Authorization"] = f"Bearer {config.api_key}"
    resp = session.post(config.endpoint, json=_payload(request, config),
                        headers=headers, timeout=config.request_timeout)
    resp.raise_for_status()
    return _extract_text(resp.json())


def complete_one(request: BatchRequest, config: ExtractorConfig,
                 session: requests.Session) -> BatchResponse:
    attempts = 1 + (config.max_retries if request.kind == "mdvl" else 0)
    last_text = ""
    for attempt in range(attempts):
        try:
            text = _call_once(request, config, session)
        except (requests.RequestException, ValueError, json.JSONDecodeError) as exc:
            logger.warning("request %s failed (%s)", request.request_id, exc)
            return BatchResponse(request_id=request.request_id, status="FAILED",
                                 error=str(exc))
        last_text = text
        if request.kind != "mdvl":
            return BatchResponse(request_id=request.request_id, status="OK",
                                 text=text)
        try:
            parse_mdvl_response(text)
            return BatchResponse(request_id=request.request_id, status="OK",
                                 text=text)
        except MetricError as exc:
            logger.info("malformed judge reply for %s (attempt %d/%d): %s",
                        request.request_id, attempt + 1, attempts, exc.code)
    # still malformed after retries: pass through verbatim, core counts it
    return BatchResponse(request_id=request.request_id, status="OK",
                         text=last_text)


def chat_complete(requests_path: Path, responses_path: Path,
                  config: ExtractorConfig) -> int:
    """Process a batch file; returns the number of FAILED requests."""
    if not config.endpoint:
        raise RuntimeError("chat endpoint not configured "
                           "(set CINEXTRACT_CHAT_ENDPOINT)")
    batch = read_batch_requests(Path(requests_path).read_text(encoding="utf-8"))
    responses: list[BatchResponse] = []
    failed = 0
    with requests.Session() as session:
        for request in batch:
            response = complete_one(request, config, session)
            if response.status == "FAILED":
                failed += 1
            responses.append(response)
    responses.sort(key=lambda r: r.request_id)
    Path(responses_path).write_text(write_batch_responses(responses),
                                    encoding="utf-8")
    return failed
