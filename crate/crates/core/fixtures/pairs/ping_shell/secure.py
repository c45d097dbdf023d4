import re
import subprocess

from flask import Flask, request

app = Flask(__name__)
HOST_RE = re.compile(r"^[A-Za-z0-9.-]+$")


def parse_latency(output):
    match = re.search(r"time=([0-9.]+) ms", output)
    if match:
        return float(match.group(1))
    return None


@app.route("/status")
def status():
    return {"service": "netcheck", "version": 2}


@app.route("/ping")
def ping():
    host = request.args.get("host", "localhost")
    count = int(request.args.get("count", "1"))
    if not HOST_RE.match(host):
        return {"error": "invalid host"}, 400
    result = subprocess.run(["ping", "-c", str(count), host], capture_output=True, text=True)
    latency = parse_latency(result.stdout)
    return {"host": host, "latency": latency}
