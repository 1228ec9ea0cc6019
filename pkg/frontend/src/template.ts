// Client-side syntax check for boot templates, so an obviously broken
// template never leaves the form. Mirrors the server's script dialect:
// a #!ipxe shebang, then echo/set/login/prompt/chain/kernel/initrd/boot/
// menu/item/choose one per line, at most one boot and nothing after it.
// The server remains the authority; this is a pre-flight.

const SHEBANG = "#!ipxe"
const VAR_NAME = /^[A-Za-z0-9_:./-]+$/

// the server substitutes these before parsing, so the checker does too
const PLACEHOLDERS: Record<string, string> = {
    "{{base_url}}": "http://cloud.invalid",
    "{{os_id}}": "os-000000000000",
}

export function checkTemplate(template: string): string | null {
    let text = template
    for (const [key, value] of Object.entries(PLACEHOLDERS)) {
        text = text.split(key).join(value)
    }
    const lines = text.split("\n")
    if ((lines[0] ?? "").trim() !== SHEBANG) {
        return `first line must be '${SHEBANG}'`
    }
    let sawBoot = false
    for (let i = 1; i < lines.length; i++) {
        const stripped = lines[i].trim()
        if (!stripped || stripped.startsWith("#")) continue
        const space = stripped.indexOf(" ")
        const word = space < 0 ? stripped : stripped.slice(0, space)
        // not trimmed: "chain  url" is two tokens to the server, so it is here
        const rest = space < 0 ? "" : stripped.slice(space + 1)
        if (sawBoot) {
            return word === "boot"
                ? "more than one boot statement"
                : `line ${i + 1}: statements follow the boot statement`
        }
        const problem = checkStatement(i + 1, word, rest)
        if (problem) return problem
        if (word === "boot") sawBoot = true
    }
    return null
}

function checkStatement(lineNo: number, word: string, rest: string): string | null {
    switch (word) {
        case "echo":
            return null
        case "set": {
            const name = rest.split(" ", 1)[0]
            if (!name) return `line ${lineNo}: set needs a variable name`
            return checkVar(lineNo, name)
        }
        case "login":
            return rest ? `line ${lineNo}: login takes no arguments` : null
        case "prompt": {
            let args = rest
            if (args.startsWith("--masked")) args = args.slice("--masked".length).trim()
            const name = args.split(" ", 1)[0]
            if (!name) return `line ${lineNo}: prompt needs a variable name`
            return checkVar(lineNo, name)
        }
        case "chain":
        case "initrd":
            if (!rest || rest.includes(" ")) {
                return `line ${lineNo}: ${word} needs exactly one URL`
            }
            return null
        case "kernel": {
            const url = rest.split(" ", 1)[0]
            return url ? null : `line ${lineNo}: kernel needs a URL`
        }
        case "boot":
            return rest ? `line ${lineNo}: boot takes no arguments` : null
        case "menu":
            return rest ? null : `line ${lineNo}: menu needs a title`
        case "item": {
            const space = rest.indexOf(" ")
            const key = space < 0 ? rest : rest.slice(0, space)
            const label = space < 0 ? "" : rest.slice(space + 1).trim()
            if (!key || !label) {
                return `line ${lineNo}: item needs a key and a label`
            }
            return null
        }
        case "choose":
            if (!rest || rest.includes(" ")) {
                return `line ${lineNo}: choose needs exactly one variable name`
            }
            return checkVar(lineNo, rest)
        default:
            return `line ${lineNo}: unknown command '${word}'`
    }
}

function checkVar(lineNo: number, name: string): string | null {
    return VAR_NAME.test(name) ? null : `line ${lineNo}: bad variable name '${name}'`
}
