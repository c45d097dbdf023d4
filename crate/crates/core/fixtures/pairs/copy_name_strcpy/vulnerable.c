#include <stdio.h>
#include <stdlib.h>
#include <string.h>

#define NAME_LEN 32

struct user {
    int id;
    char name[NAME_LEN];
    int active;
};

static int next_id = 1;

void print_user(const struct user *u)
{
    printf("%d %s %s\n", u->id, u->name, u->active ? "active" : "inactive");
}

struct user *make_user(const char *name)
{
    struct user *u = malloc(sizeof(*u));
    if (u == NULL) {
        return NULL;
    }
    u->id = next_id++;
    strcpy(u->name, name);
    u->active = 1;
    return u;
}

void deactivate(struct user *u)
{
    u->active = 0;
}

int main(int argc, char **argv)
{
    if (argc < 2) {
        fprintf(stderr, "usage: %s NAME\n", argv[0]);
        return 1;
    }
    struct user *u = make_user(argv[1]);
    print_user(u);
    free(u);
    return 0;
}
