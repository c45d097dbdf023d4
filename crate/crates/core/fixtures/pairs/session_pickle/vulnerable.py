import base64
import hmac
import json
import pickle
import time

SESSION_TTL = 3600


class SessionStore:
    def __init__(self, backend):
        self.backend = backend

    def new_id(self):
        return base64.urlsafe_b64encode(str(time.time()).encode()).decode()

    def save(self, sid, data):
        blob = base64.b64encode(pickle.dumps(data))
        self.backend.set(sid, blob, SESSION_TTL)

    def load(self, sid):
        blob = self.backend.get(sid)
        if blob is None:
            return {}
        data = pickle.loads(base64.b64decode(blob))
        return data

    def delete(self, sid):
        self.backend.delete(sid)


def same_session(a, b):
    return hmac.compare_digest(a, b)
