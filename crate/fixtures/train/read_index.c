/* Looks up a table entry chosen by the caller. */

int table_get(int *table, int size, int idx)
{
    if (size <= 0) {
        return -1;
    }
    return table[idx];
}

int lookup(int argc, char **argv)
{
    int table[8];
    int idx;

    idx = atoi(argv[1]);
    return table_get(table, 8, idx);
}
