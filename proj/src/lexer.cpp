#include "wavec/ast.hpp"

#include <cctype>
#include <cstdlib>

namespace wavec
{

namespace
{

// Multi-char operators, longest first so maximal munch works.
const char* kPunct[] = {
    "<<=", ">>=", "->", "++", "--", "+=", "-=", "*=", "/=", "%=",
    "<<", ">>", "<=", ">=", "==", "!=", "&&", "||", "[[", "]]",
    "(", ")", "[", "]", "{", "}", "<", ">", "+", "-", "*", "/", "%",
    "=", ";", ",", ".", ":", "?", "!", "~", "&", "|", "^",
};

} // namespace

std::vector<Token> tokenize(const std::string& src)
{
    std::vector<Token> out;
    size_t i = 0;
    int line = 1;
    int col = 1;

    auto advance = [&](size_t n) {
        for (size_t k = 0; k < n; ++k)
        {
            if (src[i + k] == '\n')
            {
                ++line;
                col = 1;
            }
            else
            {
                ++col;
            }
        }
        i += n;
    };

    while (i < src.size())
    {
        char c = src[i];
        if (c == ' ' || c == '\t' || c == '\r' || c == '\n')
        {
            advance(1);
            continue;
        }
        if (c == '/' && i + 1 < src.size() && src[i + 1] == '/')
        {
            while (i < src.size() && src[i] != '\n')
            {
                advance(1);
            }
            continue;
        }
        if (c == '/' && i + 1 < src.size() && src[i + 1] == '*')
        {
            advance(2);
            while (i + 1 < src.size() && !(src[i] == '*' && src[i + 1] == '/'))
            {
                advance(1);
            }
            if (i + 1 >= src.size())
            {
                fail("LexError", "unterminated block comment", {line, col});
            }
            advance(2);
            continue;
        }

        Token t;
        t.loc = {line, col};

        if (std::isalpha(uint8_t(c)) || c == '_')
        {
            size_t j = i;
            while (j < src.size() && (std::isalnum(uint8_t(src[j])) || src[j] == '_'))
            {
                ++j;
            }
            t.text = src.substr(i, j - i);
            if (t.text == "true")
            {
                t.kind = Tok::KwTrue;
            }
            else if (t.text == "false")
            {
                t.kind = Tok::KwFalse;
            }
            else
            {
                t.kind = Tok::Ident;
            }
            advance(j - i);
            out.push_back(std::move(t));
            continue;
        }

        if (std::isdigit(uint8_t(c)))
        {
            size_t j = i;
            bool isFloat = false;
            if (src[j] == '0' && j + 1 < src.size() && (src[j + 1] == 'x' || src[j + 1] == 'X'))
            {
                j += 2;
                while (j < src.size() && std::isxdigit(uint8_t(src[j])))
                {
                    ++j;
                }
            }
            else
            {
                while (j < src.size() && std::isdigit(uint8_t(src[j])))
                {
                    ++j;
                }
                if (j < src.size() && src[j] == '.' && j + 1 < src.size() && std::isdigit(uint8_t(src[j + 1])))
                {
                    isFloat = true;
                    ++j;
                    while (j < src.size() && std::isdigit(uint8_t(src[j])))
                    {
                        ++j;
                    }
                }
                if (j < src.size() && (src[j] == 'e' || src[j] == 'E'))
                {
                    size_t k = j + 1;
                    if (k < src.size() && (src[k] == '+' || src[k] == '-'))
                    {
                        ++k;
                    }
                    if (k < src.size() && std::isdigit(uint8_t(src[k])))
                    {
                        isFloat = true;
                        j = k;
                        while (j < src.size() && std::isdigit(uint8_t(src[j])))
                        {
                            ++j;
                        }
                    }
                }
            }
            std::string text = src.substr(i, j - i);
            if (isFloat)
            {
                t.kind = Tok::FloatLit;
                t.floatVal = std::strtod(text.c_str(), nullptr);
            }
            else
            {
                t.kind = Tok::IntLit;
                t.intVal = std::strtoull(text.c_str(), nullptr, 0);
            }
            t.text = std::move(text);
            advance(j - i);
            out.push_back(std::move(t));
            continue;
        }

        bool matched = false;
        for (const char* p : kPunct)
        {
            size_t n = std::char_traits<char>::length(p);
            if (src.compare(i, n, p) == 0)
            {
                t.kind = Tok::Punct;
                t.text = p;
                advance(n);
                out.push_back(std::move(t));
                matched = true;
                break;
            }
        }
        if (!matched)
        {
            fail("LexError", std::string("unexpected character '") + c + "'", t.loc);
        }
    }

    Token end;
    end.kind = Tok::End;
    end.loc = {line, col};
    out.push_back(end);
    return out;
}

} // namespace wavec
