import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np
import pytest

from wiser.config import WlanConfig
from wiser.phy import load_mcs_table


@pytest.fixture(scope="session")
def table():
    return load_mcs_table()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_config():
    return WlanConfig(n_stations=3, n_antennas=2, n_rus=3, n_slots=4, rng_seed=11)


class ChatStub:
    """In-process chat endpoint.

    ``reply(agent_id, prompt, request_json) -> (status, body)`` decides each
    answer; ``body`` is a dict (sent as JSON) or raw text.
    """

    def __init__(self, reply):
        self.reply = reply
        self.requests = []
        stub = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):
                length = int(self.headers.get("Content-Length", 0))
                payload = json.loads(self.rfile.read(length))
                prompt = payload["messages"][-1]["content"]
                agent = int(prompt.split("Agent_", 1)[1].split(",", 1)[0].split()[0])
                stub.requests.append(payload)
                status, body = stub.reply(agent, prompt, payload)
                data = json.dumps(body).encode() if isinstance(body, dict) else body.encode()
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

            def log_message(self, *args):
                pass

        self.server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)

    @property
    def endpoint(self):
        host, port = self.server.server_address
        return f"http://{host}:{port}"

    def __enter__(self):
        self.thread.start()
        return self

    def __exit__(self, *exc):
        self.server.shutdown()
        self.server.server_close()


def ollama_reply(content):
    return 200, {"model": "stub", "message": {"role": "assistant", "content": content},
                 "done": True}


@pytest.fixture
def chat_stub():
    stubs = []

    def make(reply):
        stub = ChatStub(reply).__enter__()
        stubs.append(stub)
        return stub

    yield make
    for stub in stubs:
        stub.__exit__(None, None, None)


def closed_port_endpoint():
    import socket

    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        port = s.getsockname()[1]
    return f"http://127.0.0.1:{port}"


# -- acceptance summary ----------------------------------------------------------

_acceptance_key = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_acceptance_key] = {}


@pytest.fixture
def acceptance_log(request):
    return request.config.stash[_acceptance_key]


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.stash.get(_acceptance_key, {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(results[n])
