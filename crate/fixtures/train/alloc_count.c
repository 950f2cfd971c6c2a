/* Allocates an array sized by a count read from input. */

int *make_array(int count)
{
    int *arr;
    int bytes;

    bytes = count * 4;
    arr = (int *)malloc(bytes);
    return arr;
}

int build(int argc, char **argv)
{
    int count;
    int *a;

    count = atoi(argv[1]);
    a = make_array(count);
    if (a == 0) {
        return 1;
    }
    return 0;
}
