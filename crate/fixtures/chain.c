/* A call chain twelve functions deep; the write happens in the last one. */

int f11(int x)
{
    int buf[4];
    buf[x] = 1;
    return x;
}

int f10(int x)
{
    return f11(x);
}

int f9(int x)
{
    return f10(x);
}

int f8(int x)
{
    return f9(x);
}

int f7(int x)
{
    return f8(x);
}

int f6(int x)
{
    return f7(x);
}

int f5(int x)
{
    return f6(x);
}

int f4(int x)
{
    return f5(x);
}

int f3(int x)
{
    return f4(x);
}

int f2(int x)
{
    return f3(x);
}

int f1(int x)
{
    return f2(x);
}

int f0(int argc, char **argv)
{
    return f1(argc);
}
