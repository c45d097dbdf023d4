import psycopg2

from config import DATABASE_URL


class OrderRepository:
    def __init__(self, dsn=DATABASE_URL):
        self.conn = psycopg2.connect(dsn)

    def close(self):
        self.conn.close()

    def count(self):
        cur = self.conn.cursor()
        cur.execute("SELECT COUNT(*) FROM orders")
        return cur.fetchone()[0]

    def by_customer(self, customer_id, status):
        cur = self.conn.cursor()
        query = "SELECT id, total FROM orders WHERE customer_id = %s AND status = %s"
        cur.execute(query, (customer_id, status))
        orders = cur.fetchall()
        return [{"id": o[0], "total": o[1]} for o in orders]

    def total_revenue(self):
        cur = self.conn.cursor()
        cur.execute("SELECT SUM(total) FROM orders WHERE status = 'paid'")
        value = cur.fetchone()[0]
        return value or 0


def summarize(repo):
    return {"orders": repo.count(), "revenue": repo.total_revenue()}
