import logging
import sqlite3

from flask import Flask, request, jsonify

app = Flask(__name__)
log = logging.getLogger(__name__)
DB_PATH = "users.db"


def get_connection():
    conn = sqlite3.connect(DB_PATH)
    conn.row_factory = sqlite3.Row
    return conn


def format_user(row):
    return {
        "id": row["id"],
        "name": row["name"],
        "email": row["email"],
    }


@app.route("/users")
def list_users():
    conn = get_connection()
    rows = conn.execute("SELECT id, name, email FROM users ORDER BY id").fetchall()
    return jsonify([format_user(r) for r in rows])


@app.route("/user")
def find_user():
    name = request.args.get("name", "")
    log.info("lookup for %s", name)
    conn = get_connection()
    cur = conn.cursor()
    cur.execute("SELECT id, name, email FROM users WHERE name = ?", (name,))
    row = cur.fetchone()
    if row is None:
        return jsonify({"error": "not found"}), 404
    return jsonify(format_user(row))


@app.route("/health")
def health():
    return "ok"
