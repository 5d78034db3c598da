"""Serve the built frontend and proxy /api/* to the review service.

Same-origin proxying keeps the client free of CORS concerns:

    python3 scripts/serve_static.py --port 8080 --service http://127.0.0.1:8100
"""

import argparse
import urllib.error
import urllib.request
from functools import partial
from http.server import SimpleHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

FRONTEND_DIR = Path(__file__).resolve().parent.parent


class ProxyingHandler(SimpleHTTPRequestHandler):
    service_url = ""

    def do_GET(self):
        if self.path.startswith("/api/"):
            self._proxy("GET")
        else:
            super().do_GET()

    def do_POST(self):
        if self.path.startswith("/api/"):
            self._proxy("POST")
        else:
            self.send_error(405)

    def _proxy(self, method):
        length = int(self.headers.get("Content-Length") or 0)
        body = self.rfile.read(length) if length else None
        request = urllib.request.Request(
            self.service_url + self.path, data=body, method=method,
            headers={"Content-Type": self.headers.get("Content-Type") or
                     "application/json"})
        try:
            with urllib.request.urlopen(request) as reply:
                payload = reply.read()
                status = reply.status
                content_type = reply.headers.get("Content-Type", "application/json")
        except urllib.error.HTTPError as err:
            payload = err.read()
            status = err.code
            content_type = err.headers.get("Content-Type", "application/json")
        except urllib.error.URLError as err:
            self.send_error(502, f"review service unreachable: {err.reason}")
            return
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--port", type=int, default=8080)
    parser.add_argument("--service", default="http://127.0.0.1:8100")
    args = parser.parse_args()

    handler = partial(ProxyingHandler, directory=str(FRONTEND_DIR))
    ProxyingHandler.service_url = args.service.rstrip("/")
    server = ThreadingHTTPServer(("127.0.0.1", args.port), handler)
    print(f"serving {FRONTEND_DIR} on http://127.0.0.1:{args.port} "
          f"(api -> {args.service})")
    server.serve_forever()


if __name__ == "__main__":
    main()
