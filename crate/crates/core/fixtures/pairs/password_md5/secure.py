import hashlib
import os
import secrets


class UserAccount:
    def __init__(self, username, email):
        self.username = username
        self.email = email
        self.password_hash = None
        self.salt = None

    def display_name(self):
        return self.username.title()

    def set_password(self, password):
        self.salt = secrets.token_hex(8)
        digest = hashlib.pbkdf2_hmac("sha256", password.encode(), self.salt.encode(), 600000).hex()
        self.password_hash = digest

    def check_password(self, password):
        digest = hashlib.pbkdf2_hmac("sha256", password.encode(), self.salt.encode(), 600000).hex()
        return secrets.compare_digest(digest, self.password_hash)


def random_token():
    return os.urandom(16).hex()
