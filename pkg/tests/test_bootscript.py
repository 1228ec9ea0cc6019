"""Boot script dialect tests: grammar, round trips, variable substitution."""

from __future__ import annotations

from urllib.parse import quote

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sdboot import bootscript as bs


class TestParse:
    def test_chain_only(self):
        script = bs.parse_script("#!ipxe\nchain http://boot.cloud.example/boot")
        assert script.statements == (bs.Chain("http://boot.cloud.example/boot"),)

    def test_kernel_initrd_boot(self):
        script = bs.parse_script("#!ipxe\nkernel http://h/k p=1\ninitrd http://h/i\nboot")
        assert script.statements == (
            bs.Kernel("http://h/k", "p=1"),
            bs.Initrd("http://h/i"),
            bs.Boot(),
        )

    def test_unknown_command_carries_line_number(self):
        with pytest.raises(bs.UnknownCommand) as err:
            bs.parse_script("#!ipxe\nfrobnicate")
        assert err.value.line_no == 2

    def test_missing_shebang(self):
        with pytest.raises(bs.NoShebang):
            bs.parse_script("chain http://x/")

    def test_blank_lines_and_comments_skipped(self):
        script = bs.parse_script("#!ipxe\n\n# note\necho hi\n")
        assert script.statements == (bs.Echo("hi"),)

    def test_statement_after_boot_rejected(self):
        with pytest.raises(bs.InvalidScript):
            bs.parse_script("#!ipxe\nkernel http://h/k\nboot\necho late")

    def test_two_boots_rejected(self):
        with pytest.raises(bs.InvalidScript):
            bs.parse_script("#!ipxe\nboot\nboot")

    def test_prompt_flags(self):
        script = bs.parse_script("#!ipxe\nprompt --masked passphrase Enter the passphrase")
        assert script.statements == (bs.Prompt("passphrase", "Enter the passphrase", True),)

    def test_menu_vocabulary(self):
        text = "#!ipxe\nmenu Connectivity setup\nitem wifi Configure Wi-Fi\nchoose target"
        script = bs.parse_script(text)
        assert script.statements == (
            bs.MenuStart("Connectivity setup"),
            bs.MenuItem("wifi", "Configure Wi-Fi"),
            bs.Choose("target"),
        )

    def test_chain_with_two_urls_rejected(self):
        with pytest.raises(bs.MalformedArgs):
            bs.parse_script("#!ipxe\nchain http://a/ http://b/")


class TestRender:
    def test_echo_line(self):
        assert bs.render_script(bs.Script((bs.Echo("hi"),))) == "#!ipxe\necho hi\n"

    def test_login_keyword(self):
        # matches the established boot-firmware command vocabulary
        assert bs.render_script(bs.Script((bs.Login(),))) == "#!ipxe\nlogin\n"

    def test_roundtrip_example(self):
        text = "#!ipxe\nlogin\nchain http://c/auth?u=${username}&mac=${net0/mac}\n"
        assert bs.render_script(bs.parse_script(text)) == text


class TestSubstitute:
    def test_mac_in_url_is_percent_encoded(self):
        mac = "52:54:00:12:34:56"
        script = bs.Script((bs.Chain("http://c/auth?mac=${net0/mac}"),))
        env = bs.VarEnv({"net0/mac": mac})
        out = bs.substitute(script, env)
        assert out.statements[0].url == "http://c/auth?mac=" + quote(mac, safe="")
        assert "52%3A54%3A00%3A12%3A34%3A56" in out.statements[0].url

    def test_script_without_placeholders_unchanged(self):
        script = bs.parse_script("#!ipxe\nkernel http://h/k quiet\nboot")
        assert bs.substitute(script, bs.VarEnv()) == script

    def test_undefined_variable(self):
        script = bs.Script((bs.Echo("${nosuch}"),))
        with pytest.raises(bs.UndefinedVariable):
            bs.substitute(script, bs.VarEnv())

    def test_echo_text_not_url_encoded(self):
        script = bs.Script((bs.Echo("mac is ${net0/mac}"),))
        out = bs.substitute(script, bs.VarEnv({"net0/mac": "aa:bb"}))
        assert out.statements[0].text == "mac is aa:bb"

    def test_placeholders_listed(self):
        script = bs.parse_script("#!ipxe\nchain http://c/a?u=${username}&p=${password}")
        assert bs.placeholders(script) == {"username", "password"}


words = st.text(alphabet=st.characters(min_codepoint=33, max_codepoint=126), min_size=1, max_size=10)
texts = st.lists(words, min_size=1, max_size=4).map(" ".join)
var_names = st.text(alphabet="abcdefghijklmnopqrstuvwxyz0123456789_/", min_size=1, max_size=10).filter(
    lambda s: not s.startswith("-")
)
urls = words.map(lambda w: "http://host/" + w)

statement_strategy = st.one_of(
    st.builds(bs.Echo, texts),
    st.builds(bs.Set, var_names, texts),
    st.just(bs.Login()),
    st.builds(bs.Prompt, var_names, texts, st.booleans()),
    st.builds(bs.Chain, urls),
    st.builds(bs.Kernel, urls, texts),
    st.builds(bs.Initrd, urls),
    st.builds(bs.MenuStart, texts),
    st.builds(bs.MenuItem, words, texts),
    st.builds(bs.Choose, var_names),
)


@st.composite
def script_strategy(draw):
    body = draw(st.lists(statement_strategy, max_size=8))
    if draw(st.booleans()):
        body.append(bs.Boot())
    return bs.Script(tuple(body))


class TestGrammarRoundTrip:
    @settings(max_examples=300)
    @given(script_strategy())
    def test_parse_render_identity(self, script):
        assert bs.parse_script(bs.render_script(script)) == script

    @settings(max_examples=200)
    @given(script_strategy())
    def test_render_parse_canonical(self, script):
        text = bs.render_script(script)
        assert bs.render_script(bs.parse_script(text)) == text
