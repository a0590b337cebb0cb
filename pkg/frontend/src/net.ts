/** WebSocket wiring for the session protocol. */

import type { ClientMsg, ServerMsg } from "./types.js";

export interface Connection {
  send(msg: ClientMsg): void;
  close(): void;
}

export function connect(url: string, onMessage: (msg: ServerMsg) => void,
                        onClose?: () => void): Connection {
  const ws = new WebSocket(url);
  ws.addEventListener("message", (ev) => {
    try {
      onMessage(JSON.parse(ev.data as string) as ServerMsg);
    } catch {
      console.warn("undecodable server message", ev.data);
    }
  });
  if (onClose) {
    ws.addEventListener("close", onClose);
  }
  return {
    send(msg: ClientMsg): void {
      if (ws.readyState === WebSocket.OPEN) {
        ws.send(JSON.stringify(msg));
      }
    },
    close(): void {
      ws.close();
    },
  };
}
