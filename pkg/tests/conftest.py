import json
import sys
import threading
import time
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

REPO = Path(__file__).resolve().parent.parent
FIXTURES = REPO / "fixtures"


@pytest.fixture()
def serve_app():
    """Start apps on ephemeral ports; yields a `start(app) -> base_url` callable."""
    import uvicorn

    running: list[tuple[uvicorn.Server, threading.Thread]] = []

    def start(app) -> str:
        config = uvicorn.Config(app, host="127.0.0.1", port=0, log_level="warning",
                                lifespan="off")
        server = uvicorn.Server(config)
        thread = threading.Thread(target=server.run, daemon=True)
        thread.start()
        deadline = time.time() + 10
        while not server.started:
            if time.time() > deadline:
                raise RuntimeError("server did not start in time")
            time.sleep(0.01)
        port = server.servers[0].sockets[0].getsockname()[1]
        running.append((server, thread))
        return f"http://127.0.0.1:{port}"

    yield start
    for server, thread in running:
        server.should_exit = True
        thread.join(timeout=5)


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def superhero_dir() -> Path:
    return FIXTURES / "detection" / "superhero_reporter"


@pytest.fixture(scope="session")
def superhero_doc(superhero_dir) -> str:
    return (superhero_dir / "schema.json").read_text(encoding="utf-8")


@pytest.fixture()
def superhero_schema(superhero_doc):
    from dramaturge.schema import parse_schema

    return parse_schema(superhero_doc)


@pytest.fixture()
def superhero_inputs(superhero_dir):
    from dramaturge.transcript import PlayerInput

    inputs = []
    for raw in (superhero_dir / "inputs.jsonl").read_text(encoding="utf-8").splitlines():
        if raw.strip():
            data = json.loads(raw)
            inputs.append(PlayerInput(actions=data.get("actions"), dialogue=data.get("dialogue")))
    return inputs


@pytest.fixture()
def superhero_cassette(superhero_dir):
    from dramaturge.provider import Cassette

    return Cassette.load(superhero_dir / "provider.cassette.jsonl")


@pytest.fixture()
def superhero_rules(superhero_dir):
    return json.loads((superhero_dir / "rules.json").read_text(encoding="utf-8"))
