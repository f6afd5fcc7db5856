import base64
import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import numpy as np
import pytest

from audioforge.audio import SAMPLE_RATE, decode_wav
from audioforge.clients import (REFUSAL_TEXT, ClientError, HttpClient,
                                HttpTextGenClient, HttpTtsClient,
                                MockCaptionAugmentClient, MockJudgeClient,
                                MockQaGenClient, MockTextGenClient,
                                MockTranslateClient, MockTtsClient,
                                make_client, stable_hash)


def test_stable_hash_is_stable_and_salted():
    assert stable_hash("abc") == stable_hash("abc")
    assert stable_hash("abc") != stable_hash("abd")
    assert stable_hash("abc", "s1") != stable_hash("abc", "s2")


def test_mock_tts_deterministic_waveform():
    tts = MockTtsClient()
    a, b = tts.synthesize("hello"), tts.synthesize("hello")
    assert a == b
    w = decode_wav(a)
    assert len(w.samples) == len("hello".encode()) * int(0.040 * SAMPLE_RATE)


def test_mock_tts_distinct_text_distinct_audio():
    tts = MockTtsClient()
    assert tts.synthesize("aaa") != tts.synthesize("aab")
    assert len(decode_wav(tts.synthesize("")).samples) > 0


def test_mock_textgen_refusal_planting_is_stable():
    gen = MockTextGenClient(refusal_rate=0.3)
    inputs = [f"prompt number {i}" for i in range(100)]
    refused = {t for t in inputs if gen.generate(t) == REFUSAL_TEXT}
    assert 10 <= len(refused) <= 50  # ~30% by stable hash
    again = {t for t in inputs if gen.generate(t) == REFUSAL_TEXT}
    assert refused == again
    clean = MockTextGenClient(refusal_rate=0.0)
    assert all(clean.generate(t) != REFUSAL_TEXT for t in inputs)


def test_mock_translate_round_trip():
    tr = MockTranslateClient()
    th = tr.translate("hello world", "th")
    assert th == "[th] hello world"
    assert tr.translate(th, "th") == th  # idempotent
    assert tr.translate(th, "en") == "hello world"  # unwrap reverses


def test_mock_caption_augment():
    c = MockCaptionAugmentClient()
    out = c.augment("a dog barks")
    assert out.startswith("a dog barks") and len(out) > len("a dog barks")
    assert MockCaptionAugmentClient(identity=True).augment("x") == "x"


def test_mock_qagen_modes():
    q = MockQaGenClient()
    ext = json.loads(q.qa_pairs("the cat sat on a mat", "extractive"))
    assert ext and ext[0]["answer"] in "the cat sat on a mat".split()
    mcq = json.loads(q.qa_pairs("the cat sat on a mat", "mcq"))
    assert mcq[0]["answer"] in mcq[0]["choices"]
    with pytest.raises(ClientError):
        q.qa_pairs("text", "essay")


def test_make_client_factory():
    assert isinstance(make_client("tts", "mock"), MockTtsClient)
    assert isinstance(make_client("judge", "mock"), MockJudgeClient)
    assert isinstance(make_client("textgen", "http://localhost:1/x"),
                      HttpTextGenClient)


# -- wire contract over real HTTP ----------------------------------------------


class _Handler(BaseHTTPRequestHandler):
    fail_first = {"count": 0}

    def do_POST(self):
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        assert set(body) == {"kind", "text", "params"}
        if self.path == "/flaky" and _Handler.fail_first["count"] == 0:
            _Handler.fail_first["count"] += 1
            self.send_response(500)
            self.end_headers()
            return
        if body["kind"] == "tts":
            payload = {"ok": True,
                       "audio_b64": base64.b64encode(
                           MockTtsClient().synthesize(body["text"])).decode()}
        elif self.path == "/refuse":
            payload = {"ok": False, "error": "nope"}
        else:
            payload = {"ok": True,
                       "text": f"echo:{body['kind']}:{body['text']}"}
        data = json.dumps(payload).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, *a):  # keep test output quiet
        pass


@pytest.fixture(scope="module")
def http_server():
    server = HTTPServer(("127.0.0.1", 0), _Handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_address[1]}"
    server.shutdown()


def test_http_textgen_wire_contract(http_server):
    client = HttpTextGenClient(http_server + "/gen")
    assert client.generate("hello") == "echo:textgen:hello"


def test_http_tts_wire_contract(http_server):
    client = HttpTtsClient(http_server + "/tts")
    wav = client.synthesize("hi")
    np.testing.assert_array_equal(decode_wav(wav).samples,
                                  decode_wav(MockTtsClient().synthesize("hi")).samples)


def test_http_client_retries_then_succeeds(http_server):
    _Handler.fail_first["count"] = 0
    client = HttpClient(http_server + "/flaky", "textgen", retries=2)
    assert client.request("x")["text"] == "echo:textgen:x"


def test_http_client_ok_false_raises(http_server):
    client = HttpClient(http_server + "/refuse", "textgen", retries=0)
    with pytest.raises(ClientError, match="ok=false"):
        client.request("x")


def test_http_client_unreachable_raises():
    client = HttpClient("http://127.0.0.1:9/none", "textgen", retries=0,
                        timeout=0.2)
    with pytest.raises(ClientError):
        client.request("x")
