/* Copies a user-supplied name into a fixed buffer. */

void store_name(char *dst, const char *src, int n)
{
    memcpy(dst, src, n);
    dst[n] = 0;
}

int handle_request(int argc, char **argv)
{
    char name[16];
    int n;

    n = strlen(argv[1]);
    store_name(name, argv[1], n);
    return n;
}
